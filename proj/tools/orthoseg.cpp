#include <cstdio>

int main() {
    std::fprintf(stderr, "orthoseg: no subcommand given\n");
    return 2;
}
