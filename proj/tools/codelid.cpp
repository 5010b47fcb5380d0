#include "codelid/cli.hpp"

int main(int argc, char** argv) { return codelid::run(argc, argv); }
