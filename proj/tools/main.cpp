#include "cli.hpp"

int main(int argc, char** argv)
{
    return mcal::cli::run(argc, argv);
}
