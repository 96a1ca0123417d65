#include "cli.hpp"

int main(int argc, char** argv) { return paraug::cli::run(argc, argv); }
