#pragma once

#include "specpoint/matrix.hpp"

namespace specpoint {

/// One point set: n x d coordinates plus optional per-point input features
/// (n x 0 when the cloud carries none).
struct Cloud {
    linalg::Matrix coords;
    linalg::Matrix feats;
};

} // namespace specpoint
