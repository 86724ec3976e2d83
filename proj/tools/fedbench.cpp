#include "fedbench/commands.hpp"

int main(int argc, char** argv) { return fedbench::cli_main(argc, argv); }
