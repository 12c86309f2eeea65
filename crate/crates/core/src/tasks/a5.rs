use std::sync::OnceLock;

/// Even permutation of `{0..4}` in one-line notation: `p[i]` is the image of `i`.
pub type Perm = [u8; 5];

/// Number of elements of A5.
pub const A5_ORDER: usize = 60;

fn is_even(p: &Perm) -> bool {
    let mut inversions = 0;
    for i in 0..5 {
        for j in i + 1..5 {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 0
}

/// `(a ∘ b)(x) = a(b(x))`.
pub fn compose(a: &Perm, b: &Perm) -> Perm {
    let mut out = [0; 5];
    for (x, o) in out.iter_mut().enumerate() {
        *o = a[b[x] as usize];
    }
    out
}

struct Table {
    elements: Vec<Perm>,
    cayley: Vec<u8>,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut elements = Vec::with_capacity(A5_ORDER);
        for code in 0..5u32.pow(5) {
            let mut p = [0u8; 5];
            let mut c = code;
            for k in (0..5).rev() {
                p[k] = (c % 5) as u8;
                c /= 5;
            }
            let mut seen = [false; 5];
            if p.iter().all(|&x| !std::mem::replace(&mut seen[x as usize], true)) && is_even(&p) {
                elements.push(p);
            }
        }
        let index = |p: &Perm| elements.iter().position(|e| e == p).expect("closed under composition");
        let mut cayley = vec![0u8; A5_ORDER * A5_ORDER];
        for (i, a) in elements.iter().enumerate() {
            for (j, b) in elements.iter().enumerate() {
                cayley[i * A5_ORDER + j] = index(&compose(a, b)) as u8;
            }
        }
        Table { elements, cayley }
    })
}

/// Elements in lexicographic one-line order; index 0 is the identity.
pub fn a5_elements() -> &'static [Perm] {
    &table().elements
}

pub fn a5_index(p: &Perm) -> Option<usize> {
    a5_elements().iter().position(|e| e == p)
}

/// Index of `a ∘ b`.
pub fn a5_mul(a: usize, b: usize) -> usize {
    table().cayley[a * A5_ORDER + b] as usize
}

/// Running products `g₁ ∘ g₂ ∘ … ∘ g_{j+1}` for every prefix.
pub fn a5_prefix_products(tokens: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    tokens
        .iter()
        .map(|&t| {
            acc = a5_mul(acc, t);
            acc
        })
        .collect()
}

/// Golden-file rendering: `index<TAB>p0 p1 p2 p3 p4` per line.
pub fn a5_table_text() -> String {
    a5_elements()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let perm: Vec<String> = p.iter().map(u8::to_string).collect();
            format!("{i}\t{}\n", perm.join(" "))
        })
        .collect()
}
