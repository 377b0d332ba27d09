#include "qgdok/service.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return qgdok::service::run_cli(argc, argv, std::cout, std::cerr);
}
