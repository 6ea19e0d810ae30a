// Just enough Modified-DH forward kinematics to draw the arm: frame
// origins for the side-view sketch, computed from the chain.json asset
// the primary package exports at build time.
function rowTransform(frame, q) {
    let d = frame.d;
    let theta = frame.theta;
    if (frame.kind === "prismatic")
        d += q;
    if (frame.kind === "revolute")
        theta += q;
    const ca = Math.cos(frame.alpha), sa = Math.sin(frame.alpha);
    const ct = Math.cos(theta), st = Math.sin(theta);
    return {
        r: [[ct, -st, 0], [ca * st, ca * ct, -sa], [sa * st, sa * ct, ca]],
        t: [frame.a, -d * sa, d * ca],
    };
}
function matMul(a, b) {
    const out = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
    for (let i = 0; i < 3; i++)
        for (let j = 0; j < 3; j++)
            for (let k = 0; k < 3; k++)
                out[i][j] += a[i][k] * b[k][j];
    return out;
}
function matVec(a, v) {
    return [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ];
}
/** Base-frame origins of every chain frame, plus the final needle axis. */
export function chainPoints(chain, joints) {
    let r = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    let t = [0, 0, 0];
    const origins = [[0, 0, 0]];
    let k = 0;
    for (const frame of chain.frames) {
        const q = frame.kind === "fixed" ? 0 : (joints[k++] ?? 0);
        const local = rowTransform(frame, q);
        const step = matVec(r, local.t);
        t = [t[0] + step[0], t[1] + step[1], t[2] + step[2]];
        r = matMul(r, local.r);
        origins.push([t[0], t[1], t[2]]);
    }
    return { origins, needleAxis: [r[0][2], r[1][2], r[2][2]] };
}
/** Orthographic projection used by the console's sketch (x right, z up). */
export function project(p) {
    // mix in a little y so all three base axes remain visible
    return [p[0] + 0.35 * p[1], p[2] + 0.18 * p[1]];
}
//# sourceMappingURL=kinematics.js.map