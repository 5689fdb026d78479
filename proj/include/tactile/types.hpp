#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tactile {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. an untrained model).
class StateError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver ran out of iterations.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// ---------------------------------------------------------------------------
// Gesture vocabulary
// ---------------------------------------------------------------------------

enum class GestureState : std::uint8_t {
  NoContact = 0,
  Tap = 1,
  Touch = 2,
  Grab = 3,
  Slip = 4,
};

inline constexpr std::size_t kNumStates = 5;

inline constexpr std::array<GestureState, kNumStates> kAllStates = {
    GestureState::NoContact, GestureState::Tap, GestureState::Touch,
    GestureState::Grab, GestureState::Slip};

constexpr int ordinal(GestureState s) noexcept { return static_cast<int>(s); }

GestureState state_from_ordinal(int v);

/// CSV token: no_contact, tap, touch, grab, slip.
std::string_view to_string(GestureState s) noexcept;

/// Inverse of to_string. Throws InputError on unknown tokens.
GestureState parse_state(std::string_view token);

// ---------------------------------------------------------------------------
// Recordings and snippets
// ---------------------------------------------------------------------------

inline constexpr std::size_t kChannels = 3;
inline constexpr double kDefaultRateHz = 500.0;

struct ForceSample {
  double t = 0.0;
  double fx = 0.0;
  double fy = 0.0;
  double fz = 0.0;
};

/// A contiguous force stream with a per-sample label.
///
/// Forces are stored column-wise (N x 3: fx, fy, fz) so that channel access is
/// contiguous. Time of sample k is `t0 + k / rate_hz`.
struct Recording {
  std::string id;
  double rate_hz = kDefaultRateHz;
  double t0 = 0.0;
  Eigen::MatrixX3d forces;
  std::vector<GestureState> labels;

  std::size_t size() const noexcept { return labels.size(); }
  double time_at(std::size_t k) const noexcept { return t0 + static_cast<double>(k) / rate_hz; }
  ForceSample sample(std::size_t k) const;

  /// Checks the structural invariants; throws InputError on violation.
  void validate() const;

  /// Most frequent contact label, or NoContact for a recording without contact.
  GestureState primary_state() const;
};

/// Fixed-length labeled window cut from a Recording.
struct Snippet {
  Eigen::MatrixX3d data;  // L x 3
  GestureState label = GestureState::NoContact;
  std::string source_id;
  std::size_t offset = 0;

  std::size_t length() const noexcept { return static_cast<std::size_t>(data.rows()); }
};

using SnippetSet = std::vector<Snippet>;

/// Labels of a snippet collection as ordinals.
std::vector<int> labels_of(const SnippetSet& snippets);

}  // namespace tactile
