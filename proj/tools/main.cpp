#include <cstdio>

int main() {
    std::puts("synthval: command-line interface under construction");
    return 0;
}
