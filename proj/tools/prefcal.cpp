#include "prefcal/app.hpp"

int main(int argc, char** argv) { return prefcal::app::run_cli(argc, argv); }
