#pragma once

#include <vector>

namespace lyricrl {

/// Song-token ids as consumed and produced by the models.
using TokenSeq = std::vector<int>;
/// Phoneme ids in [0, phoneme_vocab).
using PhonemeSeq = std::vector<int>;

}  // namespace lyricrl
