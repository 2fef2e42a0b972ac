#include <iostream>

#include "epigraph/attention.hpp"
#include "epigraph/epipolar.hpp"
#include "epigraph/graph.hpp"
#include "epigraph/losses.hpp"
#include "epigraph/voxel.hpp"

int main() {
    std::cout << "epigraph\n";
    return 0;
}
