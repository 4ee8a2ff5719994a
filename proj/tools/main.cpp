#include <cstdio>

int main() {
    std::puts("tridiff: placeholder");
    return 0;
}
