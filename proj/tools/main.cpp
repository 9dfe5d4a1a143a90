#include "semplaus/harness.hpp"

int main(int argc, char** argv) { return semplaus::cli_main(argc, argv); }
