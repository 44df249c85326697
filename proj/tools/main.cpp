#include "tutornet/cli.hpp"

int main(int argc, char** argv) { return tutornet::run_cli(argc, argv); }
