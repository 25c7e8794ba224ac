"""Numba kernels for the fabric integrator and the triangle rasterizer.

Everything here operates on plain arrays so the hot loops stay in nopython
mode; the object-level API lives in :mod:`fabricsmooth.sim` and
:mod:`fabricsmooth.render`.
"""

import numpy as np
from numba import njit

# Point pairs directly joined by a spring are exempt from self-collision.
# Grid offsets: (0,1)/(1,0) structural, (1,1) shear, (0,2)/(2,0) flexion.


@njit(cache=True, inline="always")
def _spring_connected(ia, ja, ib, jb):
    di = ia - ib
    dj = ja - jb
    if di < 0:
        di = -di
    if dj < 0:
        dj = -dj
    if di == 0 and (dj == 1 or dj == 2):
        return True
    if dj == 0 and (di == 1 or di == 2):
        return True
    if di == 1 and dj == 1:
        return True
    return False


@njit(cache=True)
def sort_by_x(pos, order):
    """Insertion sort of point indices by x; near-linear on coherent states."""
    n = order.shape[0]
    for k in range(1, n):
        v = order[k]
        xv = pos[v, 0]
        m = k - 1
        while m >= 0 and pos[order[m], 0] > xv:
            order[m + 1] = order[m]
            m -= 1
        order[m + 1] = v


@njit(cache=True)
def add_spring_forces(pos, sa, sb, rest, ks, out):
    for s in range(sa.shape[0]):
        a = sa[s]
        b = sb[s]
        dx = pos[b, 0] - pos[a, 0]
        dy = pos[b, 1] - pos[a, 1]
        dz = pos[b, 2] - pos[a, 2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d > 0.0:
            f = ks * (d - rest[s]) / d
            fx = f * dx
            fy = f * dy
            fz = f * dz
            out[a, 0] += fx
            out[a, 1] += fy
            out[a, 2] += fz
            out[b, 0] -= fx
            out[b, 1] -= fy
            out[b, 2] -= fz


@njit(cache=True)
def add_collision_forces(pos, order, grid_n, thick, kcol, out):
    """Separating forces between non-adjacent pairs closer than ``thick``.

    Pairs are pruned with a sweep over x-sorted indices, then rejected on
    per-axis distance before the full check. Coincident pairs separate
    along +x so the force direction is always defined.
    """
    n = pos.shape[0]
    t2 = thick * thick
    count = 0
    for k in range(n):
        a = order[k]
        xa = pos[a, 0]
        for m in range(k + 1, n):
            b = order[m]
            dx = pos[b, 0] - xa
            if dx > thick:
                break
            dy = pos[b, 1] - pos[a, 1]
            if dy > thick or dy < -thick:
                continue
            dz = pos[b, 2] - pos[a, 2]
            if dz > thick or dz < -thick:
                continue
            if _spring_connected(a // grid_n, a % grid_n, b // grid_n, b % grid_n):
                continue
            d2 = dx * dx + dy * dy + dz * dz
            if d2 >= t2:
                continue
            d = np.sqrt(d2)
            if d > 1e-12:
                f = kcol * (thick - d) / d
                fx = f * dx
                fy = f * dy
                fz = f * dz
            else:
                fx = -kcol * thick
                fy = 0.0
                fz = 0.0
            out[a, 0] -= fx
            out[a, 1] -= fy
            out[a, 2] -= fz
            out[b, 0] += fx
            out[b, 1] += fy
            out[b, 2] += fz
            count += 1
    return count


@njit(cache=True)
def constraint_sweeps(pos, pinned, sa, sb, rest, cap_ratio, max_sweeps, floor_z):
    """Project over-stretched springs back to the cap. Returns sweeps used
    (== max_sweeps means the cap was hit before convergence)."""
    ns = sa.shape[0]
    for sweep in range(max_sweeps):
        nviol = 0
        for s in range(ns):
            a = sa[s]
            b = sb[s]
            pa = pinned[a]
            pb = pinned[b]
            if pa and pb:
                continue
            dx = pos[b, 0] - pos[a, 0]
            dy = pos[b, 1] - pos[a, 1]
            dz = pos[b, 2] - pos[a, 2]
            lim = cap_ratio * rest[s]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= lim * lim:
                continue
            nviol += 1
            d = np.sqrt(d2)
            corr = (d - lim) / d
            if pa:
                pos[b, 0] -= corr * dx
                pos[b, 1] -= corr * dy
                pos[b, 2] -= corr * dz
                if pos[b, 2] < floor_z:
                    pos[b, 2] = floor_z
            elif pb:
                pos[a, 0] += corr * dx
                pos[a, 1] += corr * dy
                pos[a, 2] += corr * dz
                if pos[a, 2] < floor_z:
                    pos[a, 2] = floor_z
            else:
                h = 0.5 * corr
                pos[a, 0] += h * dx
                pos[a, 1] += h * dy
                pos[a, 2] += h * dz
                pos[b, 0] -= h * dx
                pos[b, 1] -= h * dy
                pos[b, 2] -= h * dz
                if pos[a, 2] < floor_z:
                    pos[a, 2] = floor_z
                if pos[b, 2] < floor_z:
                    pos[b, 2] = floor_z
        if nviol == 0:
            return sweep
    return max_sweeps


@njit(cache=True)
def run_steps(pos, prev, pinned, order, grid_n, sa, sb, rest, forces, n_steps,
              ks, kcol, damping, dt, gravity, thick, cap_ratio, max_sweeps,
              floor_z, floor_friction, pin_dx, pin_dy, pin_dz, settle_eps):
    """Advance the fabric ``n_steps`` iterations, moving pinned points by
    (pin_dx, pin_dy, pin_dz) each iteration.

    Returns (diverged_index, iterations_run, cap_hits). diverged_index is
    -1 on success; a non-negative value names the first non-finite point.
    When settle_eps > 0, exits early once the largest per-iteration
    displacement falls below it.
    """
    n = pos.shape[0]
    dt2 = dt * dt
    keep = 1.0 - damping
    move_pins = pin_dx != 0.0 or pin_dy != 0.0 or pin_dz != 0.0
    cap_hits = 0
    for it in range(n_steps):
        if move_pins:
            for i in range(n):
                if pinned[i]:
                    pos[i, 0] += pin_dx
                    pos[i, 1] += pin_dy
                    pos[i, 2] += pin_dz
        for i in range(n):
            forces[i, 0] = 0.0
            forces[i, 1] = 0.0
            forces[i, 2] = -gravity
        add_spring_forces(pos, sa, sb, rest, ks, forces)
        sort_by_x(pos, order)
        add_collision_forces(pos, order, grid_n, thick, kcol, forces)

        max_disp2 = 0.0
        for i in range(n):
            if pinned[i]:
                continue
            px = pos[i, 0]
            py = pos[i, 1]
            pz = pos[i, 2]
            nx = px + keep * (px - prev[i, 0]) + forces[i, 0] * dt2
            ny = py + keep * (py - prev[i, 1]) + forces[i, 1] * dt2
            nz = pz + keep * (pz - prev[i, 2]) + forces[i, 2] * dt2
            if not (np.isfinite(nx) and np.isfinite(ny) and np.isfinite(nz)):
                return i, it, cap_hits
            prev[i, 0] = px
            prev[i, 1] = py
            prev[i, 2] = pz
            if nz < floor_z:
                nz = floor_z
                if floor_friction > 0.0:
                    nx -= floor_friction * (nx - px)
                    ny -= floor_friction * (ny - py)
            pos[i, 0] = nx
            pos[i, 1] = ny
            pos[i, 2] = nz
            d2 = (nx - px) * (nx - px) + (ny - py) * (ny - py) + (nz - pz) * (nz - pz)
            if d2 > max_disp2:
                max_disp2 = d2
        sweeps = constraint_sweeps(pos, pinned, sa, sb, rest, cap_ratio,
                                   max_sweeps, floor_z)
        if sweeps >= max_sweeps:
            cap_hits += 1
        if settle_eps > 0.0 and not move_pins:
            if max_disp2 < settle_eps * settle_eps:
                return -1, it + 1, cap_hits
    return -1, n_steps, cap_hits


# ---------------------------------------------------------------------------
# Rasterization


@njit(cache=True)
def fill_occupancy(xy, tris, grid, lo, hi):
    """Mark grid cells whose center falls inside any projected triangle."""
    g = grid.shape[0]
    scale = g / (hi - lo)
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        x0 = xy[i0, 0]
        y0 = xy[i0, 1]
        x1 = xy[i1, 0]
        y1 = xy[i1, 1]
        x2 = xy[i2, 0]
        y2 = xy[i2, 1]
        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        ca = max(0, int(np.floor((xmin - lo) * scale - 0.5)))
        cb = min(g - 1, int(np.ceil((xmax - lo) * scale)))
        ra = max(0, int(np.floor((ymin - lo) * scale - 0.5)))
        rb = min(g - 1, int(np.ceil((ymax - lo) * scale)))
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        inv = 1.0 / area
        for r in range(ra, rb + 1):
            cy = lo + (r + 0.5) / scale
            for c in range(ca, cb + 1):
                cx = lo + (c + 0.5) / scale
                w0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) * inv
                w1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) * inv
                if w0 < 0.0 or w1 < 0.0 or w0 + w1 > 1.0:
                    continue
                grid[r, c] = True


@njit(cache=True)
def raster_triangles(pix, depth, world_z, tris, tri_buf, depth_buf, z_buf):
    """Z-buffered triangle fill in pixel space.

    pix: per-vertex (col, row) pixel coordinates; depth: camera-space depth
    (smaller = closer, wins the z-test); world_z: world height carried along
    for depth-image shading. Buffers must be pre-initialized (tri_buf = -1,
    depth_buf = +inf).
    """
    h = tri_buf.shape[0]
    w = tri_buf.shape[1]
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        x0 = pix[i0, 0]
        y0 = pix[i0, 1]
        x1 = pix[i1, 0]
        y1 = pix[i1, 1]
        x2 = pix[i2, 0]
        y2 = pix[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        inv = 1.0 / area
        ca = max(0, int(np.floor(min(x0, min(x1, x2)))))
        cb = min(w - 1, int(np.ceil(max(x0, max(x1, x2)))))
        ra = max(0, int(np.floor(min(y0, min(y1, y2)))))
        rb = min(h - 1, int(np.ceil(max(y0, max(y1, y2)))))
        for r in range(ra, rb + 1):
            cy = r + 0.5
            for c in range(ca, cb + 1):
                cx = c + 0.5
                w0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) * inv
                w1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) * inv
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                d = w0 * depth[i0] + w1 * depth[i1] + w2 * depth[i2]
                if d < depth_buf[r, c]:
                    depth_buf[r, c] = d
                    z_buf[r, c] = w0 * world_z[i0] + w1 * world_z[i1] + w2 * world_z[i2]
                    tri_buf[r, c] = t


@njit(cache=True)
def count_triangles_above(cx, cy, cz, verts, tris, skip_vertex):
    """Count triangles (not touching ``skip_vertex``) that cover point
    (cx, cy) at interpolated height strictly above cz."""
    hits = 0
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        if i0 == skip_vertex or i1 == skip_vertex or i2 == skip_vertex:
            continue
        x0 = verts[i0, 0]
        y0 = verts[i0, 1]
        x1 = verts[i1, 0]
        y1 = verts[i1, 1]
        x2 = verts[i2, 0]
        y2 = verts[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        inv = 1.0 / area
        w0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) * inv
        w1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) * inv
        w2 = 1.0 - w0 - w1
        if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
            continue
        z = w0 * verts[i0, 2] + w1 * verts[i1, 2] + w2 * verts[i2, 2]
        if z > cz + 1e-9:
            hits += 1
    return hits
