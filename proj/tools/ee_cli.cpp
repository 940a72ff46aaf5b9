#include "ee/pipeline/commands.hpp"

int main(int argc, char** argv) { return ee::pipeline::run_cli(argc, argv); }
