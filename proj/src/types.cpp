#include "tactile/types.hpp"

#include <cmath>

namespace tactile {

GestureState state_from_ordinal(int v) {
  if (v < 0 || v >= static_cast<int>(kNumStates))
    throw InputError("gesture ordinal out of range: " + std::to_string(v));
  return static_cast<GestureState>(v);
}

std::string_view to_string(GestureState s) noexcept {
  switch (s) {
    case GestureState::NoContact: return "no_contact";
    case GestureState::Tap: return "tap";
    case GestureState::Touch: return "touch";
    case GestureState::Grab: return "grab";
    case GestureState::Slip: return "slip";
  }
  return "?";
}

GestureState parse_state(std::string_view token) {
  for (GestureState s : kAllStates)
    if (to_string(s) == token) return s;
  throw InputError("unknown gesture label '" + std::string(token) + "'");
}

ForceSample Recording::sample(std::size_t k) const {
  const auto i = static_cast<Eigen::Index>(k);
  return {time_at(k), forces(i, 0), forces(i, 1), forces(i, 2)};
}

void Recording::validate() const {
  if (!(rate_hz > 0.0)) throw InputError("recording '" + id + "': rate_hz must be positive");
  if (static_cast<std::size_t>(forces.rows()) != labels.size())
    throw InputError("recording '" + id + "': label count does not match sample count");
  if (!forces.allFinite()) throw InputError("recording '" + id + "': non-finite force value");
  if (!std::isfinite(t0)) throw InputError("recording '" + id + "': non-finite start time");
}

GestureState Recording::primary_state() const {
  std::array<std::size_t, kNumStates> hist{};
  for (GestureState s : labels) ++hist[static_cast<std::size_t>(ordinal(s))];
  std::size_t best = 0;
  int best_state = ordinal(GestureState::NoContact);
  for (int s = 1; s < static_cast<int>(kNumStates); ++s) {
    if (hist[static_cast<std::size_t>(s)] > best) {
      best = hist[static_cast<std::size_t>(s)];
      best_state = s;
    }
  }
  return static_cast<GestureState>(best_state);
}

std::vector<int> labels_of(const SnippetSet& snippets) {
  std::vector<int> y;
  y.reserve(snippets.size());
  for (const Snippet& s : snippets) y.push_back(ordinal(s.label));
  return y;
}

}  // namespace tactile
