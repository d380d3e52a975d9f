#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "smartcourse/cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("smartcourse"));
  if (const char* level = std::getenv("SMARTCOURSE_LOG")) spdlog::set_level(spdlog::level::from_str(level));
  std::vector<std::string> args(argv + 1, argv + argc);
  return smartcourse::cli::dispatch(args, std::cin, std::cout, std::cerr);
}
