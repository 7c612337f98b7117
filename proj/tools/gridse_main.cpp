#include <cstdio>
int main() { std::puts("gridse CLI placeholder"); return 0; }
