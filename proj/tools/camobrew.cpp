#include "camobrew/cli.hpp"

int main(int argc, char** argv) { return camobrew::cli_main(argc, argv); }
