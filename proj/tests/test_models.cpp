#include <catch2/catch_amalgamated.hpp>
#include "fpie/fpie.hpp"
