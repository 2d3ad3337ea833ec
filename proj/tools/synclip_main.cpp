#include "synclip/cli.hpp"

int main(int argc, char** argv) { return synclip::cli_run(argc, argv); }
