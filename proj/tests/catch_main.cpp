// Catch2 amalgamated translation unit; provides main() for every test binary.
#include <catch2/catch_amalgamated.cpp>
