#pragma once

#include <string>

namespace swingcert {

/// Fixed 9-significant-digit rendering shared by every CSV and report.
std::string format_number(double x);

}  // namespace swingcert
