#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace smartcourse {

/// Canonicalizes a whole-string course code: 2-4 letters, optional single
/// space or hyphen, 3-4 digits. Returns "DEPT NNNN" uppercased, or nullopt.
std::optional<std::string> canonical_code(std::string_view text);

bool is_canonical_code(std::string_view text);

}  // namespace smartcourse
