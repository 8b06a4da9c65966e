#include "bdm/detail/bigfloat.hpp"

namespace bdm::detail {

namespace {
thread_local long g_precision = 53;
}

PrecisionScope::PrecisionScope(long bits) : previous_(g_precision) { g_precision = bits; }

PrecisionScope::~PrecisionScope() { g_precision = previous_; }

long PrecisionScope::current() { return g_precision; }

}  // namespace bdm::detail
