#include "fpie/fpie.hpp"
int main() { return 0; }
