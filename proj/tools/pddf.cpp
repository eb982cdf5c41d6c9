// CLI entry point; subcommands are wired up in cli.hpp.
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::puts("pddf: not wired yet");
    return 2;
}
