#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace smartcourse {

/// Letter grades ordered best to worst; the enumerator order is the scale order.
enum class Grade : std::uint8_t { A, AMinus, BPlus, B, BMinus, CPlus, C, CMinus, DPlus, D, F };

inline constexpr std::array<Grade, 11> kAllGrades{Grade::A,     Grade::AMinus, Grade::BPlus, Grade::B,
                                                  Grade::BMinus, Grade::CPlus, Grade::C,     Grade::CMinus,
                                                  Grade::DPlus, Grade::D,      Grade::F};

std::string_view grade_symbol(Grade g) noexcept;
double grade_points(Grade g) noexcept;

/// Accepts "B-", "B−" (U+2212) and "B–" (U+2013); case-sensitive on the letter.
std::optional<Grade> parse_grade(std::string_view text) noexcept;

/// True when `a` sits strictly lower on the scale than `b`.
constexpr bool worse_than(Grade a, Grade b) noexcept {
  return static_cast<std::uint8_t>(a) > static_cast<std::uint8_t>(b);
}

constexpr bool better_than(Grade a, Grade b) noexcept { return worse_than(b, a); }

}  // namespace smartcourse
