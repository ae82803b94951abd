#include "lumix/cli.hpp"

int main(int argc, char** argv) { return lumix::cli_main(argc, argv); }
