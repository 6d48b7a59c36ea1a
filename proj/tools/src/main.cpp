#include "hallu_cli/commands.hpp"

int main(int argc, char** argv) { return hallu::cli::cli_main(argc, argv); }
