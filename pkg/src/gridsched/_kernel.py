"""Compiled replication loop; mirrors ``sim_engine._replicate_python`` step for step.

Both consume the same pre-drawn random arrays in the same order and perform
the same floating-point operations, so they return bit-identical results.
Returns status 1 when a random array runs out (the caller regrows and reruns).
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict

POLICY_DEFAULT, POLICY_CR, POLICY_TP, POLICY_ETP = 0, 1, 2, 3
COST_QUADRATIC, COST_PIECEWISE = 0, 1
EV_INIT, EV_ACTIVATE, EV_WAIT, EV_COMPLETE, EV_RELEASE, EV_EXPIRE = 0, 1, 2, 3, 4, 5


@njit(cache=True)
def _cost(x, cost_kind, qc, pk, pb):
    if cost_kind == COST_QUADRATIC:
        return (qc[0] * x + qc[1]) * x + qc[2]
    best = -np.inf
    for i in range(pk.shape[0]):
        v = pk[i] * x + pb[i]
        if v > best:
            best = v
    return best


@njit(cache=True)
def _total_power(counts, powers):
    if powers.shape[0] == 1:
        return counts[0] * powers[0]
    p = 0.0
    for k in range(powers.shape[0]):
        p += counts[k] * powers[k]
    return p


@njit(cache=True)
def _less(t1, k1, s1, t2, k2, s2):
    if t1 != t2:
        return t1 < t2
    if k1 != k2:
        return k1 < k2
    return s1 < s2


@njit(cache=True)
def _push(h_t, h_k, h_s, h_id, h_c, n, t, k, s, tid, c):
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if _less(t, k, s, h_t[parent], h_k[parent], h_s[parent]):
            h_t[i] = h_t[parent]
            h_k[i] = h_k[parent]
            h_s[i] = h_s[parent]
            h_id[i] = h_id[parent]
            h_c[i] = h_c[parent]
            i = parent
        else:
            break
    h_t[i] = t
    h_k[i] = k
    h_s[i] = s
    h_id[i] = tid
    h_c[i] = c
    return n + 1


@njit(cache=True)
def _pop(h_t, h_k, h_s, h_id, h_c, n):
    """Remove the root; the caller reads it beforehand. Returns the new size."""
    n -= 1
    t, k, s, tid, c = h_t[n], h_k[n], h_s[n], h_id[n], h_c[n]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        right = child + 1
        if right < n and _less(h_t[right], h_k[right], h_s[right], h_t[child], h_k[child], h_s[child]):
            child = right
        if _less(h_t[child], h_k[child], h_s[child], t, k, s):
            h_t[i] = h_t[child]
            h_k[i] = h_k[child]
            h_s[i] = h_s[child]
            h_id[i] = h_id[child]
            h_c[i] = h_c[child]
            i = child
        else:
            break
    if n > 0:
        h_t[i] = t
        h_k[i] = k
        h_s[i] = s
        h_id[i] = tid
        h_c[i] = c
    return n


@njit(cache=True)
def simulate(
    T, warm, boundaries, lam, s_rate, d_rate, powers, inter, dur, dl, cls,
    policy_kind, thr, release_one, curve_q, curve_v,
    cost_kind, qc, pk, pb, want_trace,
):
    n_batches = boundaries.shape[0] - 1
    batch_cost = np.zeros(n_batches)
    batch_power = np.zeros(n_batches)
    L = powers.shape[0]
    single = L == 1
    counts = np.zeros(L, np.int64)
    N = inter.shape[0]
    cap = 2 * N + 4

    h_t = np.empty(cap)
    h_k = np.empty(cap, np.int64)
    h_s = np.empty(cap, np.int64)
    h_id = np.empty(cap, np.int64)
    h_c = np.empty(cap, np.int64)
    hn = 0
    q_ids = np.empty(N + 2, np.int64)
    q_head = 0
    q_tail = 0
    qlen = 0
    in_queue = np.zeros(N + 2, np.bool_)
    task_cls = np.zeros(N + 2, np.int64)
    released = np.empty(N + 2, np.int64)

    tr_cap = 3 * N + 4 if want_trace else 1
    tr_t = np.empty(tr_cap)
    tr_e = np.empty(tr_cap, np.int8)
    tr_p = np.empty(tr_cap)
    tr_q = np.empty(tr_cap, np.int64)
    tn = 0

    occ = Dict.empty(key_type=types.float64, value_type=types.float64)
    occ_arr = np.zeros(64)
    counters = np.zeros(10, np.int64)
    i_arr = 0
    i_dur = 0
    i_dl = 0
    i_cls = 0
    seq = 0
    peak = 0.0
    batch = 0
    n_arr = 0
    n_done = 0
    n_post = 0
    n_deadline = 0
    n_release = 0
    post_arr = 0
    post_post = 0
    post_deadline = 0
    power = 0.0
    clock = 0.0

    if i_arr >= N:
        return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
    next_arrival = inter[i_arr] / lam
    i_arr += 1
    if want_trace:
        tr_t[tn] = 0.0
        tr_e[tn] = EV_INIT
        tr_p[tn] = 0.0
        tr_q[tn] = 0
        tn += 1

    while True:
        if hn > 0 and h_t[0] <= next_arrival:
            t_next = h_t[0]
            is_arrival = False
        else:
            t_next = next_arrival
            is_arrival = True
        t_stop = t_next if t_next < T else T

        if t_stop > warm:
            P = power
            c = _cost(P, cost_kind, qc, pk, pb)
            t0 = clock if clock > warm else warm
            if t_stop > t0:
                if P > peak:
                    peak = P
                if single:
                    n_act = counts[0]
                    if n_act >= occ_arr.shape[0]:
                        grown = np.zeros(2 * n_act + 1)
                        grown[: occ_arr.shape[0]] = occ_arr
                        occ_arr = grown
                    occ_arr[n_act] = occ_arr[n_act] + (t_stop - t0)
                elif P in occ:
                    occ[P] = occ[P] + (t_stop - t0)
                else:
                    occ[P] = 0.0 + (t_stop - t0)
                while batch < n_batches - 1 and t_stop > boundaries[batch + 1]:
                    dt = boundaries[batch + 1] - t0
                    batch_cost[batch] += c * dt
                    batch_power[batch] += P * dt
                    t0 = boundaries[batch + 1]
                    batch += 1
                dt = t_stop - t0
                batch_cost[batch] += c * dt
                batch_power[batch] += P * dt
        if t_next > T:
            break
        clock = t_next
        counted = 1 if clock > warm else 0

        if is_arrival:
            n_arr += 1
            post_arr += counted
            if i_arr >= N:
                return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
            next_arrival = clock + inter[i_arr] / lam
            i_arr += 1
            k_cls = 0
            if not single:
                if i_cls >= cls.shape[0]:
                    return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
                k_cls = cls[i_cls]
                i_cls += 1
            tid = n_arr
            task_cls[tid] = k_cls
            if policy_kind == POLICY_DEFAULT:
                admit = True
            elif policy_kind == POLICY_CR:
                admit = power < thr
            elif policy_kind == POLICY_TP:
                level = thr
                for j in range(curve_q.shape[0]):
                    if qlen < curve_q[j]:
                        break
                    level = curve_v[j]
                admit = power < level
            else:
                admit = power <= thr
            if admit:
                counts[k_cls] += 1
                power = _total_power(counts, powers)
                if i_dur >= dur.shape[0]:
                    return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
                hn = _push(h_t, h_k, h_s, h_id, h_c, hn, clock + dur[i_dur] / s_rate, 0, seq, tid, k_cls)
                i_dur += 1
                seq += 1
                ev = EV_ACTIVATE
            else:
                n_post += 1
                post_post += counted
                q_ids[q_tail] = tid
                q_tail += 1
                in_queue[tid] = True
                qlen += 1
                if d_rate > 0:
                    if i_dl >= dl.shape[0]:
                        return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
                    hn = _push(h_t, h_k, h_s, h_id, h_c, hn, clock + dl[i_dl] / d_rate, 1, seq, tid, k_cls)
                    i_dl += 1
                    seq += 1
                ev = EV_WAIT
            if want_trace:
                tr_t[tn] = clock
                tr_e[tn] = ev
                tr_p[tn] = power
                tr_q[tn] = qlen
                tn += 1
            continue

        kind = h_k[0]
        tid = h_id[0]
        k_cls = h_c[0]
        hn = _pop(h_t, h_k, h_s, h_id, h_c, hn)
        if kind == 0:
            n_done += 1
            power_before = power
            counts[k_cls] -= 1
            power = _total_power(counts, powers)
            n_rel = 0
            if policy_kind == POLICY_CR:
                p = power
                j = q_head
                while j < q_tail:
                    qid = q_ids[j]
                    j += 1
                    if not in_queue[qid]:
                        continue
                    if not p < thr:
                        break
                    released[n_rel] = qid
                    n_rel += 1
                    p += powers[task_cls[qid]]
                    if release_one:
                        break
            elif policy_kind == POLICY_ETP:
                if qlen > 0 and power_before <= thr:
                    while not in_queue[q_ids[q_head]]:
                        q_head += 1
                    released[0] = q_ids[q_head]
                    n_rel = 1
            for j in range(n_rel):
                rid = released[j]
                in_queue[rid] = False
                qlen -= 1
                rc = task_cls[rid]
                counts[rc] += 1
                if i_dur >= dur.shape[0]:
                    return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
                hn = _push(h_t, h_k, h_s, h_id, h_c, hn, clock + dur[i_dur] / s_rate, 0, seq, rid, rc)
                i_dur += 1
                seq += 1
            if n_rel > 0:
                n_release += n_rel
                power = _total_power(counts, powers)
            while q_head < q_tail and not in_queue[q_ids[q_head]]:
                q_head += 1
            ev = EV_RELEASE if n_rel > 0 else EV_COMPLETE
        else:
            if not in_queue[tid]:
                continue
            in_queue[tid] = False
            qlen -= 1
            while q_head < q_tail and not in_queue[q_ids[q_head]]:
                q_head += 1
            n_deadline += 1
            post_deadline += counted
            counts[k_cls] += 1
            power = _total_power(counts, powers)
            if i_dur >= dur.shape[0]:
                return 1, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
            hn = _push(h_t, h_k, h_s, h_id, h_c, hn, clock + dur[i_dur] / s_rate, 0, seq, tid, k_cls)
            i_dur += 1
            seq += 1
            ev = EV_EXPIRE
        if want_trace:
            tr_t[tn] = clock
            tr_e[tn] = ev
            tr_p[tn] = power
            tr_q[tn] = qlen
            tn += 1

    counters[0] = n_arr
    counters[1] = n_done
    counters[2] = n_post
    counters[3] = n_deadline
    counters[4] = n_release
    counters[5] = counts.sum()
    counters[6] = qlen
    counters[7] = post_arr
    counters[8] = post_post
    counters[9] = post_deadline
    return 0, batch_cost, batch_power, peak, occ, occ_arr, counters, tr_t, tr_e, tr_p, tr_q, tn
