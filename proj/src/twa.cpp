#include "point3d/twa.hpp"

#include "point3d/error.hpp"

namespace point3d {

TwaResult twa_forward(Tape& tape, Var features, bool use_raw_gram) {
    // Copy the shape up front: recording ops may reallocate the tape's node
    // storage, invalidating references into it.
    const std::vector<int> shape = tape.value(features).shape();
    if (shape.size() != 4) {
        throw DimensionError("twa_forward: expected T x C x H x W, got " +
                             tape.value(features).shape_str());
    }
    const int t = shape[0];
    const int d = shape[1] * shape[2] * shape[3];

    Var flat = tape.reshape(features, {t, d});
    Var gram = tape.matmul(flat, tape.transpose(flat));
    Var attention = tape.softmax_rows(gram);
    // Stable mixing keeps frame-permutation equivariance bitwise exact.
    Var mixed = tape.matmul_stable(use_raw_gram ? gram : attention, flat);
    Var out = tape.add(features, tape.reshape(mixed, shape));
    return TwaResult{out, attention};
}

} // namespace point3d
