#include "cli.hpp"

int main(int argc, char** argv) { return cdasim::cli::main(argc, argv); }
