#include "fsvt/cli.hpp"

int main(int argc, char** argv) { return fsvt::run_cli(argc, argv); }
