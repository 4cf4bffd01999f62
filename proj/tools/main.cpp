#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cpretrieve/cli.hpp"

int main(int argc, char** argv) {
    // stdout carries results and request logs; diagnostics go to stderr
    spdlog::set_default_logger(spdlog::stderr_color_mt("cpretrieve"));
    return cpretrieve::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
