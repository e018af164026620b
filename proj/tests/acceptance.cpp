#include <cstdio>
int main(int argc, char** argv) { (void)argc; (void)argv; std::printf("pending\n"); return 1; }
