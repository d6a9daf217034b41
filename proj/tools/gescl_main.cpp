// SPDX-License-Identifier: Apache-2.0
#include "gescl/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return gescl::cli::main(argc, argv, std::cout, std::cerr);
}
