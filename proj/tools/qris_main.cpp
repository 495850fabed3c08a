#include "qris/cli.hpp"

int main(int argc, char** argv) { return qris::run_cli(argc, argv); }
