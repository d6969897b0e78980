#include "matmart/cli.hpp"

int main(int argc, char** argv) { return matmart::cli::run(argc, argv); }
