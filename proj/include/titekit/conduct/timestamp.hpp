#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace titekit::conduct {

/// Milliseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// Fixed conversion between calendar days and design months.
inline constexpr double kDaysPerMonth = 30.4375;
inline constexpr std::int64_t kMillisPerDay = 86'400'000;

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" (or a "+00:00" offset). Returns
/// nullopt for anything else, including impossible calendar dates.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Canonical form: "YYYY-MM-DDTHH:MM:SSZ", with ".fff" only when non-zero.
std::string format_timestamp(Timestamp ts);

double months_between(Timestamp from, Timestamp to);
Timestamp add_days(Timestamp ts, double days);
Timestamp now_utc();

}  // namespace titekit::conduct
