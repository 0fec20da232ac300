#include "cli.hpp"

int main(int argc, char** argv) { return chiralcasimir::cli::main_entry(argc, argv); }
