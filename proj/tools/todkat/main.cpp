#include "commands.hpp"

int main(int argc, char** argv) { return todkat::cli::run(argc, argv); }
