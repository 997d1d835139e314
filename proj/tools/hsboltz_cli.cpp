#include "hsboltz/cli_io.hpp"

int main(int argc, char** argv) { return hsboltz::cli_main(argc, argv); }
