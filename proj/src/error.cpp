#include "mfeq/error.h"
#include "mfeq/exec.h"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfeq {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Input: return "input error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Model: return "model error";
    case ErrorKind::Estimation: return "estimation error";
    case ErrorKind::Mode: return "mode error";
    case ErrorKind::Convergence: return "convergence error";
    case ErrorKind::Divergence: return "divergence error";
    case ErrorKind::Precondition: return "precondition error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Shape: return "shape error";
    }
    return "error";
}

void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace mfeq
