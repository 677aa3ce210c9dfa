#include "fxpnn/cli.hpp"

int main(int argc, char** argv)
{
    return fxpnn::cli::run(argc, argv);
}
