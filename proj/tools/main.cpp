#include "commands.hpp"

int main(int argc, char** argv) { return lyricrl::cli::run_cli(argc, argv); }
