#include "mfeq/csv.h"

#include <charconv>

namespace mfeq {

std::string fmt_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

} // namespace mfeq
