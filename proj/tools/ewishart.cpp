#include "ewishart/cli.hpp"

int main(int argc, char** argv) { return ewishart::run_cli(argc, argv); }
