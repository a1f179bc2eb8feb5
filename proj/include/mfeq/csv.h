#pragma once

#include <string>

namespace mfeq {

// 17 significant digits, '.' decimal point, independent of the C locale.
std::string fmt_real(double x);

} // namespace mfeq
