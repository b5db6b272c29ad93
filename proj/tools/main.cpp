#include <cstdio>

int main() {
    std::puts("dcv: subcommands not wired up yet");
    return 2;
}
