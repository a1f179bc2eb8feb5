#pragma once

namespace mfeq {

// Serial is the reference path; Parallel must reproduce it bit for bit.
enum class Exec { Serial, Parallel };

int max_threads();

} // namespace mfeq
