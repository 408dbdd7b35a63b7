#pragma once

#include "point3d/tape.hpp"

namespace point3d {

struct TwaResult {
    Var output;    // T x C x H' x W', residual added
    Var attention; // T x T row-stochastic mixing matrix
};

// Time-wise attention over stacked per-frame features F (T x C x H' x W'):
// flatten each frame, form the frame-by-frame Gram matrix, softmax its rows
// into the attention matrix M, mix the flattened frames with it, and add
// the input back. With use_raw_gram the un-softmaxed Gram matrix does the
// mixing instead (M is still returned for inspection).
TwaResult twa_forward(Tape& tape, Var features, bool use_raw_gram = false);

} // namespace point3d
