#include "nlrspirit/cli.hpp"

int main(int argc, char** argv) { return nlrspirit::cli_main(argc, argv); }
