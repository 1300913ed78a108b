#include "cplan/cli.hpp"

int main(int argc, char** argv) { return cplan::run(argc, argv); }
