#include "geofield/cli.hpp"

int main(int argc, char** argv) { return geofield::cli_dispatch(argc, argv); }
