#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "commands.hpp"

int main(int argc, char** argv) {
    // Training allocates many short-lived large buffers; keep them on the heap
    // instead of round-tripping through mmap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    const std::vector<std::string> args(argv + 1, argv + argc);
    return rei::cli::run(args, std::cout, std::cerr);
}
