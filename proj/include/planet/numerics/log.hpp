// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

namespace planet::log {

using Sink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: stderr). Returns the previous sink.
Sink set_warning_sink(Sink sink);
void warn(const std::string& message);

}  // namespace planet::log
