#include "shortcutlens/cli.hpp"

int main(int argc, char** argv) { return shortcutlens::run_cli(argc, argv); }
