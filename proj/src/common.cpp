#include "lbt/error.hpp"
#include "lbt/types.hpp"

namespace lbt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::TrainingDiverged: return "training diverged";
    case ErrorCode::OperatorInapplicable: return "operator inapplicable";
    case ErrorCode::PoolExhausted: return "pool exhausted";
    case ErrorCode::CalibrationFailed: return "calibration failed";
    case ErrorCode::Tuning: return "tuning error";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::ContractViolation: return "contract violation";
    case ErrorCode::MissingArtifact: return "missing artifact";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Seed derive_seed(Seed parent, std::string_view tag) {
  return splitmix64(parent ^ fnv1a(tag.data(), tag.size()));
}

Seed derive_seed(Seed parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + index);
}

}  // namespace lbt
