// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/log.hpp"

#include <iostream>
#include <utility>

namespace planet::log {

namespace {

Sink& sink() {
  static Sink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

Sink set_warning_sink(Sink s) { return std::exchange(sink(), std::move(s)); }

void warn(const std::string& message) {
  if (sink()) sink()(message);
}

}  // namespace planet::log
