#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace sprout {

using Date = std::chrono::year_month_day;

// Parses a strict ISO-8601 calendar date (YYYY-MM-DD). Throws DataError.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date date);

// Whole days from `from` to `to` (negative when `to` precedes `from`).
int days_between(Date from, Date to);
Date add_days(Date date, int days);

} // namespace sprout
