"""Hot numeric kernels: belief recursions, training loops, evaluators.

Every function here is backend-agnostic loop code over plain numpy arrays;
``backend.jit`` compiles it with numba by default and leaves it as pure
Python/numpy when ``CODEDCTRL_BACKEND=numpy``. Both paths run the identical
statements in the identical order, so outputs are bit-for-bit equal.

Conventions shared by all kernels:

* ``kernel`` is (U, S, S) row-stochastic in the last axis, ``cost`` is (S, U).
* ``qmaps``/``gmaps`` are (A, S) / (A, M) int64 action tables.
* random draws come from a pregenerated ``uniforms`` array consumed strictly
  left to right; the per-step draw order is documented on each kernel.
* status codes: 0 ok, 1 belief desync (zero mass at a realized symbol),
  2 node cap exceeded.
"""

import numpy as np

from .backend import jit

STATUS_OK = 0
STATUS_DESYNC = 1
STATUS_TREE_TOO_LARGE = 2


@jit
def tv_dist(a, b):
    """Total variation as the plain L1 sum |a_i - b_i| (range [0, 2])."""
    d = 0.0
    for i in range(a.shape[0]):
        diff = a[i] - b[i]
        if diff < 0.0:
            d -= diff
        else:
            d += diff
    return d


@jit
def symbol_mass(pi, qmap, q):
    m = 0.0
    for x in range(pi.shape[0]):
        if qmap[x] == q:
            m += pi[x]
    return m


@jit
def filter_restrict(pi, qmap, q, out):
    """out = pi restricted to the preimage of q, renormalized.

    Returns the preimage mass before normalization; 0.0 signals an
    unreachable symbol and leaves ``out`` unspecified.
    """
    n = pi.shape[0]
    mass = 0.0
    for x in range(n):
        if qmap[x] == q:
            mass += pi[x]
    if mass <= 0.0:
        return 0.0
    for x in range(n):
        if qmap[x] == q:
            out[x] = pi[x] / mass
        else:
            out[x] = 0.0
    total = 0.0
    for x in range(n):
        total += out[x]
    for x in range(n):
        out[x] /= total
    return mass


@jit
def kernel_push(pi, kernel_u, out):
    """out = pi pushed through one control's kernel, renormalized exactly."""
    n = pi.shape[0]
    for xp in range(n):
        out[xp] = 0.0
    for x in range(n):
        w = pi[x]
        if w > 0.0:
            for xp in range(n):
                out[xp] += w * kernel_u[x, xp]
    total = 0.0
    for xp in range(n):
        total += out[xp]
    for xp in range(n):
        out[xp] /= total


@jit
def predictor_step(pi, qmap, gmap, kernel, q, tmp, out):
    """One Bayes predictor update: condition on symbol q, push through P(.|.,g(q)).

    Implemented literally as filter-then-push so the two-step factorization
    holds bit-for-bit. Returns the symbol mass (0.0 = unreachable symbol).
    """
    mass = filter_restrict(pi, qmap, q, tmp)
    if mass <= 0.0:
        return 0.0
    kernel_push(tmp, kernel[gmap[q]], out)
    return mass


@jit
def effective_cost_k(pi, qmap, gmap, cost):
    """Expected stage cost under the belief.

    When the gathered per-state costs coincide the expectation is that
    constant; returning it directly keeps constant-cost models exact (their
    Monte-Carlo estimates then carry zero variance, as they should).
    """
    n = pi.shape[0]
    first = cost[0, gmap[qmap[0]]]
    constant = True
    for x in range(1, n):
        if cost[x, gmap[qmap[x]]] != first:
            constant = False
            break
    if constant:
        return first
    total = 0.0
    for x in range(n):
        total += pi[x] * cost[x, gmap[qmap[x]]]
    return total


@jit
def categorical_k(p, unit):
    """Inverse-CDF draw over the canonical index order from one uniform."""
    acc = 0.0
    last = 0
    for i in range(p.shape[0]):
        v = p[i]
        if v > 0.0:
            last = i
            acc += v
            if unit < acc:
                return i
    return last


@jit
def nearest_grid_k(pi, grid):
    """Index of the L1-nearest grid row; ties go to the smallest index."""
    n_points = grid.shape[0]
    n = grid.shape[1]
    best = 0
    best_d = np.inf
    for g in range(n_points):
        d = 0.0
        for s in range(n):
            diff = pi[s] - grid[g, s]
            if diff < 0.0:
                d -= diff
            else:
                d += diff
        if d < best_d:
            best_d = d
            best = g
    return best


@jit
def uniform_index(unit, n):
    """Map one uniform in [0,1) to an index in {0,...,n-1}."""
    i = int(unit * n)
    if i >= n:
        i = n - 1
    return i


@jit
def row_min(q_table, row):
    m = q_table[row, 0]
    for a in range(1, q_table.shape[1]):
        v = q_table[row, a]
        if v < m:
            m = v
    return m


@jit
def lookup_sorted(keys, acts, key, fallback):
    """Binary search a sorted key array; miss returns the fallback action."""
    lo = 0
    hi = keys.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == key:
        return acts[lo]
    return fallback


@jit
def dcoe_residual_k(q_table, visits, cost_sums, trans_counts, beta, n_rows):
    """Max Bellman residual of the table against the trajectory-empirical model.

    ``trans_counts`` maps packed (state_row * A + action) << 32 | next_row
    to a visit count; rows beyond ``n_rows`` are ignored.
    """
    n_act = q_table.shape[1]
    minq = np.empty(n_rows)
    for r in range(n_rows):
        minq[r] = row_min(q_table, r)
    acc = np.zeros((n_rows, n_act))
    for key in trans_counts:
        cnt = trans_counts[key]
        sa = key >> 32
        nxt = key & 0xFFFFFFFF
        r = sa // n_act
        a = sa % n_act
        if r < n_rows:
            acc[r, a] += cnt * minq[nxt]
    worst = 0.0
    for r in range(n_rows):
        for a in range(n_act):
            n = visits[r, a]
            if n > 0:
                resid = q_table[r, a] - cost_sums[r, a] / n - beta * acc[r, a] / n
                if resid < 0.0:
                    resid = -resid
                if resid > worst:
                    worst = resid
    return worst


@jit
def psi_from_key(key, win_len, base, qmaps, gmaps, kernel, mu, out, buf_a, buf_b):
    """Roll the fixed prior mu forward through the history packed in ``key``.

    Digits are read oldest first; each digit is symbol * A + action. When a
    step's symbol has zero mass under the rolled belief, the belief is
    re-seeded from mu restricted to the symbol's preimage (uniform on the
    preimage if mu misses it too), and the event is counted. Returns the
    number of re-seed events; the final belief lands in ``out``.
    """
    n = mu.shape[0]
    n_act = qmaps.shape[0]
    events = 0
    cur = buf_a
    nxt = buf_b
    for s in range(n):
        cur[s] = mu[s]
    power = 1
    for _ in range(win_len - 1):
        power *= base
    rem = key
    for _ in range(win_len):
        digit = rem // power
        rem = rem % power
        if power > 1:
            power //= base
        q = digit // n_act
        a = digit % n_act
        qmap = qmaps[a]
        mass = filter_restrict(cur, qmap, q, nxt)
        if mass <= 0.0:
            events += 1
            mass = filter_restrict(mu, qmap, q, nxt)
            if mass <= 0.0:
                size = 0
                for x in range(n):
                    if qmap[x] == q:
                        size += 1
                if size == 0:
                    for x in range(n):
                        nxt[x] = 1.0 / n
                else:
                    for x in range(n):
                        if qmap[x] == q:
                            nxt[x] = 1.0 / size
                        else:
                            nxt[x] = 0.0
        kernel_push(nxt, kernel[gmaps[a][q]], cur)
    for s in range(n):
        out[s] = cur[s]
    return events


@jit
def quantized_qlearn(
    kernel,
    cost,
    beta,
    qmaps,
    gmaps,
    grid,
    pi0,
    x0,
    uniforms,
    iterations,
    conv_window,
    tol,
    checkpoint_every,
    trans_counts,
):
    """Tabular Q-learning on the grid-keyed predictor MDP.

    The exact belief recursion runs at full precision; only the table key is
    the nearest-grid index. Actions are uniform i.i.d.; the stage cost is the
    analytic effective cost. Per iteration two uniforms are consumed: action,
    then state transition.

    Returns (q_table, visits, cost_sums, curve_iter, curve_maxdq,
    curve_visited, curve_resid, n_curve, stop_iter, visited_states, status).
    """
    n_states = grid.shape[1]
    n_points = grid.shape[0]
    n_act = qmaps.shape[0]

    q_table = np.zeros((n_points, n_act))
    visits = np.zeros((n_points, n_act), dtype=np.int64)
    cost_sums = np.zeros((n_points, n_act))
    seen = np.zeros(n_points, dtype=np.int64)
    n_seen = 0

    n_cp = iterations // checkpoint_every + 2
    curve_iter = np.zeros(n_cp, dtype=np.int64)
    curve_maxdq = np.zeros(n_cp)
    curve_visited = np.zeros(n_cp, dtype=np.int64)
    curve_resid = np.zeros(n_cp)
    n_curve = 0

    pi = np.empty(n_states)
    pi_next = np.empty(n_states)
    tmp = np.empty(n_states)
    for s in range(n_states):
        pi[s] = pi0[s]

    x = x0
    state = nearest_grid_k(pi, grid)
    ptr = 0
    quiet_steps = 0
    cp_maxdq = 0.0
    stop_iter = iterations
    status = STATUS_OK

    for t in range(iterations):
        a = uniform_index(uniforms[ptr], n_act)
        ptr += 1
        qmap = qmaps[a]
        gmap = gmaps[a]
        q = qmap[x]
        u = gmap[q]
        stage = effective_cost_k(pi, qmap, gmap, cost)

        mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, pi_next)
        if mass <= 0.0:
            status = STATUS_DESYNC
            stop_iter = t
            break
        x_next = categorical_k(kernel[u, x], uniforms[ptr])
        ptr += 1
        state_next = nearest_grid_k(pi_next, grid)

        if seen[state] == 0:
            seen[state] = 1
            n_seen += 1
        n_visit = visits[state, a]
        alpha = 1.0 / (1.0 + n_visit)
        target = stage + beta * row_min(q_table, state_next)
        dq = alpha * (target - q_table[state, a])
        q_table[state, a] += dq
        visits[state, a] = n_visit + 1
        cost_sums[state, a] += stage
        pack = ((np.int64(state) * n_act + a) << 32) | np.int64(state_next)
        if pack in trans_counts:
            trans_counts[pack] += 1
        else:
            trans_counts[pack] = 1

        adq = dq if dq >= 0.0 else -dq
        if adq > cp_maxdq:
            cp_maxdq = adq
        if adq >= tol:
            quiet_steps = 0
        else:
            quiet_steps += 1

        swap = pi
        pi = pi_next
        pi_next = swap
        x = x_next
        state = state_next

        done = t + 1 == iterations
        if conv_window > 0 and tol > 0.0 and quiet_steps >= conv_window:
            stop_iter = t + 1
            done = True
        if done or (t + 1) % checkpoint_every == 0:
            curve_iter[n_curve] = t + 1
            curve_maxdq[n_curve] = cp_maxdq
            curve_visited[n_curve] = n_seen
            curve_resid[n_curve] = dcoe_residual_k(
                q_table, visits, cost_sums, trans_counts, beta, n_points
            )
            n_curve += 1
            cp_maxdq = 0.0
        if done:
            stop_iter = t + 1
            break

    return (
        q_table,
        visits,
        cost_sums,
        curve_iter,
        curve_maxdq,
        curve_visited,
        curve_resid,
        n_curve,
        stop_iter,
        n_seen,
        status,
    )


@jit
def window_qlearn(
    kernel,
    cost,
    beta,
    qmaps,
    gmaps,
    n_sym,
    mu,
    win_len,
    x_init,
    uniforms,
    iterations,
    conv_window,
    tol,
    checkpoint_every,
    registry,
    trans_counts,
    capacity,
):
    """Tabular Q-learning on the sliding-window MDP with fixed prior mu.

    Warm-up: ``win_len`` uniform actions starting at the true state
    ``x_init`` populate the first window. Window states register lazily in
    ``registry`` (key -> row); each new row caches its rolled-forward belief
    so the stage cost is a lookup. Two uniforms per step (action, transition),
    warm-up included.

    Returns (q_table, visits, cost_sums, beliefs, row_keys, n_rows,
    curve_iter, curve_maxdq, curve_visited, curve_resid, n_curve, stop_iter,
    reseed_events, status).
    """
    n_states = mu.shape[0]
    n_act = qmaps.shape[0]
    base = np.int64(n_sym) * n_act

    q_table = np.zeros((capacity, n_act))
    visits = np.zeros((capacity, n_act), dtype=np.int64)
    cost_sums = np.zeros((capacity, n_act))
    beliefs = np.empty((capacity, n_states))
    row_keys = np.zeros(capacity, dtype=np.int64)
    n_rows = 0

    n_cp = iterations // checkpoint_every + 2
    curve_iter = np.zeros(n_cp, dtype=np.int64)
    curve_maxdq = np.zeros(n_cp)
    curve_visited = np.zeros(n_cp, dtype=np.int64)
    curve_resid = np.zeros(n_cp)
    n_curve = 0

    buf_a = np.empty(n_states)
    buf_b = np.empty(n_states)
    reseed_events = 0
    ptr = 0

    pow_high = np.int64(1)
    for _ in range(win_len - 1):
        pow_high *= base

    x = x_init
    key = np.int64(0)
    for _ in range(win_len):
        a = uniform_index(uniforms[ptr], n_act)
        ptr += 1
        q = qmaps[a, x]
        u = gmaps[a, q]
        x = categorical_k(kernel[u, x], uniforms[ptr])
        ptr += 1
        key = key * base + (np.int64(q) * n_act + a)

    if key in registry:
        row = registry[key]
    else:
        row = n_rows
        registry[key] = row
        row_keys[row] = key
        reseed_events += psi_from_key(
            key, win_len, base, qmaps, gmaps, kernel, mu, beliefs[row], buf_a, buf_b
        )
        n_rows += 1

    quiet_steps = 0
    cp_maxdq = 0.0
    stop_iter = iterations
    status = STATUS_OK

    for t in range(iterations):
        a = uniform_index(uniforms[ptr], n_act)
        ptr += 1
        qmap = qmaps[a]
        gmap = gmaps[a]
        q = qmap[x]
        u = gmap[q]
        stage = effective_cost_k(beliefs[row], qmap, gmap, cost)

        x_next = categorical_k(kernel[u, x], uniforms[ptr])
        ptr += 1
        key_next = (key % pow_high) * base + (np.int64(q) * n_act + a)
        if key_next in registry:
            row_next = registry[key_next]
        else:
            row_next = n_rows
            registry[key_next] = row_next
            row_keys[row_next] = key_next
            reseed_events += psi_from_key(
                key_next,
                win_len,
                base,
                qmaps,
                gmaps,
                kernel,
                mu,
                beliefs[row_next],
                buf_a,
                buf_b,
            )
            n_rows += 1

        n_visit = visits[row, a]
        alpha = 1.0 / (1.0 + n_visit)
        target = stage + beta * row_min(q_table, row_next)
        dq = alpha * (target - q_table[row, a])
        q_table[row, a] += dq
        visits[row, a] = n_visit + 1
        cost_sums[row, a] += stage
        pack = ((np.int64(row) * n_act + a) << 32) | np.int64(row_next)
        if pack in trans_counts:
            trans_counts[pack] += 1
        else:
            trans_counts[pack] = 1

        adq = dq if dq >= 0.0 else -dq
        if adq > cp_maxdq:
            cp_maxdq = adq
        if adq >= tol:
            quiet_steps = 0
        else:
            quiet_steps += 1

        x = x_next
        key = key_next
        row = row_next

        done = t + 1 == iterations
        if conv_window > 0 and tol > 0.0 and quiet_steps >= conv_window:
            stop_iter = t + 1
            done = True
        if done or (t + 1) % checkpoint_every == 0:
            curve_iter[n_curve] = t + 1
            curve_maxdq[n_curve] = cp_maxdq
            curve_visited[n_curve] = n_rows
            curve_resid[n_curve] = dcoe_residual_k(
                q_table, visits, cost_sums, trans_counts, beta, n_rows
            )
            n_curve += 1
            cp_maxdq = 0.0
        if done:
            stop_iter = t + 1
            break

    return (
        q_table,
        visits,
        cost_sums,
        beliefs,
        row_keys,
        n_rows,
        curve_iter,
        curve_maxdq,
        curve_visited,
        curve_resid,
        n_curve,
        stop_iter,
        reseed_events,
        status,
    )


@jit
def mc_eval_quantized(
    kernel, cost, beta, qmaps, gmaps, grid, policy_actions, pi0, horizon, reps, uniforms
):
    """Monte-Carlo discounted cost of a grid policy from the recurrent prior.

    Per replication: one uniform for x0 ~ pi0, then one per step for the
    state transition. Stage cost is the analytic effective cost at the exact
    predictor. Returns (per-rep costs, status).
    """
    n_states = grid.shape[1]
    costs = np.zeros(reps)
    pi = np.empty(n_states)
    pi_next = np.empty(n_states)
    tmp = np.empty(n_states)
    ptr = 0
    status = STATUS_OK
    for r in range(reps):
        for s in range(n_states):
            pi[s] = pi0[s]
        x = categorical_k(pi0, uniforms[ptr])
        ptr += 1
        disc = 1.0
        total = 0.0
        for _ in range(horizon):
            a = policy_actions[nearest_grid_k(pi, grid)]
            qmap = qmaps[a]
            gmap = gmaps[a]
            q = qmap[x]
            u = gmap[q]
            total += disc * effective_cost_k(pi, qmap, gmap, cost)
            mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, pi_next)
            if mass <= 0.0:
                status = STATUS_DESYNC
                break
            x = categorical_k(kernel[u, x], uniforms[ptr])
            ptr += 1
            swap = pi
            pi = pi_next
            pi_next = swap
            disc *= beta
        if status != STATUS_OK:
            break
        costs[r] = total
    return costs, status


@jit
def mc_eval_window(
    kernel,
    cost,
    beta,
    qmaps,
    gmaps,
    n_sym,
    policy_keys,
    policy_acts,
    fallback,
    win_len,
    x_init,
    horizon,
    reps,
    uniforms,
):
    """Monte-Carlo discounted cost of a window policy.

    Matches the training initialization: the source starts at ``x_init``,
    the first ``win_len`` actions are uniform (two uniforms per warm-up step),
    then one uniform per evaluated step. The score is the analytic effective
    cost at the exact predictor started from the known initial state, so the
    estimate is unbiased for the true system cost. Returns (costs, status).
    """
    n_states = kernel.shape[1]
    n_act = qmaps.shape[0]
    base = np.int64(n_sym) * n_act
    pow_high = np.int64(1)
    for _ in range(win_len - 1):
        pow_high *= base

    costs = np.zeros(reps)
    pi = np.empty(n_states)
    pi_next = np.empty(n_states)
    tmp = np.empty(n_states)
    ptr = 0
    status = STATUS_OK
    for r in range(reps):
        for s in range(n_states):
            pi[s] = 0.0
        pi[x_init] = 1.0
        x = x_init
        key = np.int64(0)
        for _ in range(win_len):
            a = uniform_index(uniforms[ptr], n_act)
            ptr += 1
            qmap = qmaps[a]
            gmap = gmaps[a]
            q = qmap[x]
            u = gmap[q]
            mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, pi_next)
            if mass <= 0.0:
                status = STATUS_DESYNC
                break
            x = categorical_k(kernel[u, x], uniforms[ptr])
            ptr += 1
            key = key * base + (np.int64(q) * n_act + a)
            swap = pi
            pi = pi_next
            pi_next = swap
        if status != STATUS_OK:
            break
        disc = 1.0
        total = 0.0
        for _ in range(horizon):
            a = lookup_sorted(policy_keys, policy_acts, key, fallback)
            qmap = qmaps[a]
            gmap = gmaps[a]
            q = qmap[x]
            u = gmap[q]
            total += disc * effective_cost_k(pi, qmap, gmap, cost)
            mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, pi_next)
            if mass <= 0.0:
                status = STATUS_DESYNC
                break
            x = categorical_k(kernel[u, x], uniforms[ptr])
            ptr += 1
            key = (key % pow_high) * base + (np.int64(q) * n_act + a)
            swap = pi
            pi = pi_next
            pi_next = swap
            disc *= beta
        if status != STATUS_OK:
            break
        costs[r] = total
    return costs, status


@jit
def empirical_tv_gaps(kernel, qmaps, gmaps, mu, nu, trials, horizon, uniforms):
    """TV gap trajectories of two predictor recursions on one realized path.

    The true system starts x0 ~ mu; actions are uniform; the correct-prior
    recursion starts at mu, the wrong-prior one at nu. Per trial: one uniform
    for x0, then two per step (action, transition).

    Returns (gaps with shape (trials, horizon+1), status); status 1 means the
    nu-recursion hit a zero-mass symbol (absolute continuity violated).
    """
    n_states = mu.shape[0]
    n_act = qmaps.shape[0]
    gaps = np.zeros((trials, horizon + 1))
    pi = np.empty(n_states)
    pi_next = np.empty(n_states)
    pih = np.empty(n_states)
    pih_next = np.empty(n_states)
    tmp = np.empty(n_states)
    ptr = 0
    status = STATUS_OK
    for r in range(trials):
        for s in range(n_states):
            pi[s] = mu[s]
            pih[s] = nu[s]
        x = categorical_k(mu, uniforms[ptr])
        ptr += 1
        gaps[r, 0] = tv_dist(pi, pih)
        for t in range(horizon):
            a = uniform_index(uniforms[ptr], n_act)
            ptr += 1
            qmap = qmaps[a]
            gmap = gmaps[a]
            q = qmap[x]
            u = gmap[q]
            mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, pi_next)
            if mass <= 0.0:
                status = STATUS_DESYNC
                break
            mass = predictor_step(pih, qmap, gmap, kernel, q, tmp, pih_next)
            if mass <= 0.0:
                status = STATUS_DESYNC
                break
            x = categorical_k(kernel[u, x], uniforms[ptr])
            ptr += 1
            swap = pi
            pi = pi_next
            pi_next = swap
            swap = pih
            pih = pih_next
            pih_next = swap
            gaps[r, t + 1] = tv_dist(pi, pih)
        if status != STATUS_OK:
            break
    return gaps, status


@jit
def exact_tree_quantized(
    kernel, cost, beta, qmaps, gmaps, n_sym, grid, policy_actions, pi0, horizon, node_cap
):
    """Exhaustive expected discounted cost of a grid policy, branching on symbols.

    Level t holds every reachable (belief, weight) pair after t symbols; the
    stage contribution is beta^t * sum_nodes weight * effective_cost. Returns
    (value, status, peak level width).
    """
    n_states = pi0.shape[0]
    cur_pi = np.empty((1, n_states))
    cur_w = np.empty(1)
    for s in range(n_states):
        cur_pi[0, s] = pi0[s]
    cur_w[0] = 1.0
    n_cur = 1
    peak = 1

    tmp = np.empty(n_states)
    value = 0.0
    disc = 1.0
    status = STATUS_OK

    for _ in range(horizon):
        bound = n_cur * n_sym
        if bound > node_cap:
            status = STATUS_TREE_TOO_LARGE
            break
        nxt_pi = np.empty((bound, n_states))
        nxt_w = np.empty(bound)
        n_nxt = 0
        for i in range(n_cur):
            pi = cur_pi[i]
            w = cur_w[i]
            a = policy_actions[nearest_grid_k(pi, grid)]
            qmap = qmaps[a]
            gmap = gmaps[a]
            value += disc * w * effective_cost_k(pi, qmap, gmap, cost)
            for q in range(n_sym):
                mass = predictor_step(pi, qmap, gmap, kernel, q, tmp, nxt_pi[n_nxt])
                if mass > 0.0:
                    nxt_w[n_nxt] = w * mass
                    n_nxt += 1
        cur_pi = nxt_pi
        cur_w = nxt_w
        n_cur = n_nxt
        if n_cur > peak:
            peak = n_cur
        disc *= beta

    return value, status, peak


@jit
def exact_tree_window(
    kernel,
    cost,
    beta,
    qmaps,
    gmaps,
    n_sym,
    policy_keys,
    policy_acts,
    fallback,
    win_len,
    pi_init,
    horizon,
    node_cap,
):
    """Exhaustive expected discounted cost of a window policy.

    The warm-up expands over uniform actions (weight 1/A each) and feasible
    symbols; afterwards the policy fixes actions and only symbols branch.
    Node state is (exact predictor, window key). Returns
    (value, status, peak level width).
    """
    n_states = pi_init.shape[0]
    n_act = qmaps.shape[0]
    base = np.int64(n_sym) * n_act
    pow_high = np.int64(1)
    for _ in range(win_len - 1):
        pow_high *= base

    cur_pi = np.empty((1, n_states))
    cur_w = np.empty(1)
    cur_key = np.zeros(1, dtype=np.int64)
    for s in range(n_states):
        cur_pi[0, s] = pi_init[s]
    cur_w[0] = 1.0
    n_cur = 1
    peak = 1

    tmp = np.empty(n_states)
    status = STATUS_OK

    for _ in range(win_len):
        bound = n_cur * n_act * n_sym
        if bound > node_cap:
            status = STATUS_TREE_TOO_LARGE
            break
        nxt_pi = np.empty((bound, n_states))
        nxt_w = np.empty(bound)
        nxt_key = np.zeros(bound, dtype=np.int64)
        n_nxt = 0
        for i in range(n_cur):
            pi = cur_pi[i]
            w = cur_w[i] / n_act
            key = cur_key[i]
            for a in range(n_act):
                qmap = qmaps[a]
                gmap = gmaps[a]
                for q in range(n_sym):
                    mass = predictor_step(
                        pi, qmap, gmap, kernel, q, tmp, nxt_pi[n_nxt]
                    )
                    if mass > 0.0:
                        nxt_w[n_nxt] = w * mass
                        nxt_key[n_nxt] = key * base + (np.int64(q) * n_act + a)
                        n_nxt += 1
        cur_pi = nxt_pi
        cur_w = nxt_w
        cur_key = nxt_key
        n_cur = n_nxt
        if n_cur > peak:
            peak = n_cur

    # each warm-up leaf spawns its own symbol subtree; processing them one
    # at a time keeps level memory at O(n_sym^horizon), not roots * that
    value = 0.0
    if status == STATUS_OK:
        sub_pi = np.empty((1, n_states))
        sub_w = np.empty(1)
        sub_key = np.zeros(1, dtype=np.int64)
        for i in range(n_cur):
            for s in range(n_states):
                sub_pi[0, s] = cur_pi[i, s]
            sub_w[0] = cur_w[i]
            sub_key[0] = cur_key[i]
            n_sub = 1
            disc = 1.0
            for _ in range(horizon):
                bound = n_sub * n_sym
                if bound > node_cap:
                    status = STATUS_TREE_TOO_LARGE
                    break
                nxt_pi = np.empty((bound, n_states))
                nxt_w = np.empty(bound)
                nxt_key = np.zeros(bound, dtype=np.int64)
                n_nxt = 0
                for j in range(n_sub):
                    pi = sub_pi[j]
                    w = sub_w[j]
                    key = sub_key[j]
                    a = lookup_sorted(policy_keys, policy_acts, key, fallback)
                    qmap = qmaps[a]
                    gmap = gmaps[a]
                    value += disc * w * effective_cost_k(pi, qmap, gmap, cost)
                    for q in range(n_sym):
                        mass = predictor_step(
                            pi, qmap, gmap, kernel, q, tmp, nxt_pi[n_nxt]
                        )
                        if mass > 0.0:
                            nxt_w[n_nxt] = w * mass
                            nxt_key[n_nxt] = (key % pow_high) * base + (
                                np.int64(q) * n_act + a
                            )
                            n_nxt += 1
                sub_pi = nxt_pi
                sub_w = nxt_w
                sub_key = nxt_key
                n_sub = n_nxt
                if n_sub > peak:
                    peak = n_sub
                disc *= beta
            if status != STATUS_OK:
                break

    return value, status, peak
