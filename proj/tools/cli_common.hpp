#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>

#include "fsloc/error.hpp"

namespace fsloc::cli {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kIo = 3 };

// Maps library exceptions onto the documented exit codes.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
}

inline int parse_cli(CLI::App& app, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? -1 : kConfig;  // -1: help was printed
  }
  return kOk;
}

}  // namespace fsloc::cli
