// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace planet {

/// Lower-case hex SHA-1 of "blob <size>\0" + bytes, the id `git hash-object` prints.
std::string git_blob_hash(std::string_view bytes);

}  // namespace planet
