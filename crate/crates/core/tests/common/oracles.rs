#![allow(dead_code)]

pub struct TTestFixture {
    pub a: &'static [f64],
    pub b: &'static [f64],
    pub welch_t: f64,
    pub welch_p: f64,
    pub pooled_t: f64,
    pub pooled_p: f64,
}

/// Reference values from scipy.stats.ttest_ind 1.15.
pub const TTEST_FIXTURES: &[TTestFixture] = &[
    TTestFixture {
        a: &[1.0289, 1.6419, 1.1467, -0.9732, -1.3928, 0.0672, 0.8614, 0.5092],
        b: &[2.3103, 1.2508, 1.1398, -0.2313, -0.6077, 1.9844, 0.5489, 1.3115, -0.8764, 0.0636],
        welch_t: -0.6446841714842734,
        welch_p: 0.5286953249303625,
        pooled_t: -0.6431429543423648,
        pooled_p: 0.5292417110932763,
    },
    TTestFixture {
        a: &[19.6713, 23.7946, 37.2245, 18.1553, 25.7273, 31.3103, 24.6522, 27.9817, 28.2251, 33.3451, 26.55, 32.1781, 30.4546, 33.3966, 31.7995, 43.2615, 24.6906, 39.5935, 26.7791, 22.3366, 39.6896, 26.484, 26.8989, 18.8905, 13.2144, 35.0744, 20.6779, 36.2262, 44.7853, 29.0816],
        b: &[22.2403, 31.3652, 33.5704, 27.4293, 29.1048, 37.0116, 36.5927, 33.2599, 23.8016, 28.6779, 32.6175, 27.7288, 25.3399, 24.4077, 25.2079, 24.9704, 26.2933, 35.8741, 24.1961, 34.3214, 31.5055, 29.8385, 24.0356, 26.2598, 40.8413],
        welch_t: -0.22707329098323847,
        welch_p: 0.8212824336933773,
        pooled_t: -0.21896171275382653,
        pooled_p: 0.8275209086005635,
    },
    TTestFixture {
        a: &[10.1981, 11.0764, 11.3261, 12.1113, 9.525],
        b: &[8.949, 11.7019, 10.6959, 15.9534, 12.9481, 13.1964, 12.725, 18.1418, 9.2869, 9.6082, 16.4257, 11.4679, 13.8044, 8.3551, 12.1167, 14.1592, 5.3628, 8.5253, 14.1153, 23.244, 14.3114, 11.7054, 7.7739, 13.9581, -0.507, 11.7524, 10.3493, 9.4029, 23.6018, -0.3677, 11.8886, 12.3449, 14.3366, 3.9915, 9.6669, 4.5228, 11.3619, 12.9796, 12.8224, 11.01],
        welch_t: -0.6708108883777398,
        welch_p: 0.5070718254262405,
        pooled_t: -0.2718732288858876,
        pooled_p: 0.7870206426317012,
    },
    TTestFixture {
        a: &[9.5578, 9.5321, 10.2152, 9.0757, 3.6514, 6.5559, 10.0367, 6.269, 6.6047, 9.3401, 8.8634, 11.6814, 10.5356, 7.6946, 9.3428, 0.4234, 6.6078, 8.5577, 1.8383, 8.0327, 9.7549, 12.1049, 10.2088, 14.6528, 13.5839, 4.0969, 8.3218, 8.5315, 9.2751, 7.2818, 10.8312, 11.2351, 4.4272, 11.8361, 7.0574, 12.1689, 10.694, 8.6084, 14.9651, 11.6706, 9.097, 9.7469, 16.2454, 13.2514, 11.8491, 9.6457, 10.6883, 9.4454, 4.4226, 11.657, 10.2443, 4.9482, 7.073, 8.2561, 9.9771, 14.1866, 9.0532, 3.1763, 10.9494, 8.4957, 3.7717, 2.1549, 5.807, 10.1349, 6.7249, 10.7991, 8.1567, 9.5511, 11.1087, 10.7368, 5.8425, 14.7843, 3.0681, 8.4361, 5.9352, 12.5705, 5.0684, 5.8976, 5.583, 4.8652, 7.2815, 9.5406, 6.0911, 3.918, 8.1566, 8.8628, 11.0901, 6.5261, 8.3928, 11.6768, 5.9772, 8.6674, 7.8764, 4.6333, 8.6097, 12.3276, 15.6926, 4.6288, 11.7588, 12.3084],
        b: &[10.2158, 6.0873, 7.9654, 5.6509, 8.5805, 10.1756, 6.5597, 7.7328, 9.3281, 8.9734, 5.5258, 10.6058, 8.3918, 7.5665, 7.282, 8.9287, 9.7563, 4.0149, 5.0166, 2.8765, 8.2996, 8.1558, 6.3206, 4.4531, 10.469, 11.196, 11.1433, 7.3219, 7.5486, 7.5429, 6.8599, 4.1291, 5.6833, 9.2382, 7.1924, 6.008, 6.5701, 11.5737, 10.9174, 9.9553, 7.6412, 4.1747, 7.6852, 6.3935, 8.749, 9.7586, 5.4938, 10.4956, 7.3447, 7.4249, 5.8043, 6.7349, 7.4337, 6.7007, 6.4082, 6.2143, 12.294, 6.6862, 9.0895, 7.3935, -0.1021, 15.004, 7.2036, 5.8209, 10.488, 10.9118, 5.7743, 5.1199, 4.9838, 8.0746, 7.6082, 9.1601, 6.9153, 5.9188, 7.4981, 5.7715, 8.85, 8.2421, 8.5904, 8.3308, 6.1518, 2.8923, 10.3681, 9.9123, 5.3408, 9.448, 7.5878, 7.0167, 7.1835],
        welch_t: 2.7725917395281243,
        welch_p: 0.00614810152036516,
        pooled_t: 2.7218199887170544,
        pooled_p: 0.007105971571706168,
    },
    TTestFixture {
        a: &[0.9169, 0.9869, 1.0052, 1.0203, 0.9374, 1.0383, 0.9417, 0.9495, 1.0079, 0.9537, 0.8966, 0.947],
        b: &[0.8391, 1.0879, 1.2516],
        welch_t: -0.7691244129029687,
        welch_p: 0.5206895844439334,
        pooled_t: -1.5793540667497048,
        pooled_p: 0.13826963005699738,
    },
];

/// Per-class precision, recall and F1 counted straight from the pairs.
pub fn direct_metrics(preds: &[usize], labels: &[usize], k: usize) -> (f64, Vec<(f64, f64, f64)>) {
    let accuracy = preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / preds.len() as f64;
    let per_class = (0..k)
        .map(|c| {
            let tp = preds.iter().zip(labels).filter(|&(&p, &l)| p == c && l == c).count() as f64;
            let predicted = preds.iter().filter(|&&p| p == c).count() as f64;
            let actual = labels.iter().filter(|&&l| l == c).count() as f64;
            let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let r = if actual > 0.0 { tp / actual } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f)
        })
        .collect();
    (accuracy, per_class)
}

/// Probability that a positive outscores a negative, ties counting half.
pub fn pairwise_auc(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (row, &label) in scores.iter().zip(labels) {
        for (c, &s) in row.iter().enumerate() {
            if c == label {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Every sequence of 1..=5 window predictions over five classes.
pub fn all_sequences() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for len in 1..=5u32 {
        for code in 0..5usize.pow(len) {
            let mut c = code;
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let d = c % 5;
                    c /= 5;
                    d
                })
                .collect();
            out.push(seq);
        }
    }
    out
}


/// Mode of the sequence, ties resolved toward the highest class.
pub fn mode_oracle(seq: &[usize], k: usize) -> usize {
    let counts: Vec<usize> = (0..k).map(|c| seq.iter().filter(|&&p| p == c).count()).collect();
    let best = *counts.iter().max().unwrap();
    (0..k).filter(|&c| counts[c] == best).max().unwrap()
}

/// Window start offsets and real-token counts from the stride arithmetic:
/// stride = w - floor(w/5), stop once a window reaches the end, keep a
/// window when it holds at least w/5 real tokens.
pub fn token_window_oracle(n: usize, window: usize) -> Vec<(usize, usize)> {
    let stride = window - window / 5;
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let start = k * stride;
        if start >= n {
            break;
        }
        let real = window.min(n - start);
        if real * 5 >= window {
            out.push((start, real));
        }
        if start + window >= n {
            break;
        }
        k += 1;
    }
    out
}
