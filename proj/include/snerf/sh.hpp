#pragma once

// Real spherical-harmonics basis through degree 4 (16 coefficients), used as
// the view-direction encoding of the color head.

namespace snerf {

inline constexpr int kShCoeffs = 16;

template <typename R>
void sh_basis16(R x, R y, R z, R* out) {
    const R xx = x * x, yy = y * y, zz = z * z;
    out[0] = R(0.28209479177387814);
    out[1] = R(-0.48860251190291987) * y;
    out[2] = R(0.48860251190291987) * z;
    out[3] = R(-0.48860251190291987) * x;
    out[4] = R(1.0925484305920792) * x * y;
    out[5] = R(-1.0925484305920792) * y * z;
    out[6] = R(0.94617469575755997) * zz - R(0.31539156525251999);
    out[7] = R(-1.0925484305920792) * x * z;
    out[8] = R(0.54627421529603959) * (xx - yy);
    out[9] = R(0.59004358992664352) * y * (R(3) * xx - yy);
    out[10] = R(2.8906114426405538) * x * y * z;
    out[11] = R(0.45704579946446572) * y * (R(5) * zz - R(1));
    out[12] = R(0.37317633259011546) * z * (R(5) * zz - R(3));
    out[13] = R(0.45704579946446572) * x * (R(5) * zz - R(1));
    out[14] = R(1.4453057213202769) * z * (xx - yy);
    out[15] = R(0.59004358992664352) * x * (xx - R(3) * yy);
}

}  // namespace snerf
