use proptest::prelude::*;
use rbk_core::parser::{BinOp, Func, KernelAst, Var};
use rbk_core::{eval_naive, parse, validate_kernel, ClusterState, Kernel};

fn kernels() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        (0.0f64..4.0).prop_map(|k| Kernel::constant(k).unwrap()),
        (0.0f64..4.0, 0.0f64..=1.0).prop_map(|(k, b)| Kernel::product_power(k, b).unwrap()),
        Just(Kernel::expression("min(j,k)", 64).unwrap()),
        Just(Kernel::expression("j+k", 64).unwrap()),
    ]
}

fn states() -> impl Strategy<Value = ClusterState> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], 1..48)
        .prop_map(|c| ClusterState::new(0.0, c))
}

fn asts() -> impl Strategy<Value = KernelAst> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|v| KernelAst::Num(v as f64 / 8.0)),
        Just(KernelAst::Var(Var::J)),
        Just(KernelAst::Var(Var::K)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| KernelAst::Binary(op, Box::new(a), Box::new(b))),
            (inner.clone(), (0u32..16).prop_map(|e| e as f64 / 4.0))
                .prop_map(|(b, e)| KernelAst::Pow(Box::new(b), e)),
            (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                .prop_map(|(f, a, b)| KernelAst::Call(f, Box::new(a), Box::new(b))),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Number and mass can only decrease.
    #[test]
    fn number_and_mass_rates_are_nonpositive(kernel in kernels(), state in states()) {
        let d = eval_naive(&kernel, &state).d;
        let scale: f64 = 1.0 + d.iter().map(|x| x.abs()).sum::<f64>();
        let dnu: f64 = d.iter().sum();
        let dmass: f64 = d.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
        prop_assert!(dnu <= 1e-13 * scale, "dnu = {dnu}");
        prop_assert!(dmass <= 1e-13 * scale * state.n() as f64, "dmass = {dmass}");
    }

    /// A size that is neither present nor reachable as a difference gets zero rate.
    #[test]
    fn unreachable_sizes_have_zero_rate(kernel in kernels(), state in states()) {
        let c = state.values();
        let n = c.len();
        let d = eval_naive(&kernel, &state).d;
        for j in 1..=n {
            let reachable = (1..=n - j).any(|k| c[j + k - 1] > 0.0 && c[k - 1] > 0.0);
            if c[j - 1] == 0.0 && !reachable {
                prop_assert_eq!(d[j - 1].to_bits(), 0u64);
            }
        }
    }

    #[test]
    fn moment_ordering(state in states()) {
        prop_assert!(state.nu() <= state.mass() + 1e-12);
        prop_assert!(state.nu_odd() <= state.nu() + 1e-12);
    }

    #[test]
    fn printed_form_reparses(ast in asts()) {
        let printed = ast.to_string();
        let back = parse(&printed).unwrap();
        for (j, k) in [(1.0, 1.0), (2.0, 5.0), (7.0, 3.0)] {
            prop_assert!(same(ast.eval(j, k), back.eval(j, k)), "{printed}");
        }
        prop_assert_eq!(back.to_string(), printed);
    }

    /// `f(j,k) + f(k,j)` is symmetric; with nonnegative leaves, `+`, `*`, min,
    /// max and powers it is also nonnegative, so validation must accept it.
    #[test]
    fn symmetrized_expressions_validate(a in 0.0f64..10.0, b in 0.0f64..10.0, p in 0u32..8) {
        let src = format!(
            "{a}*min(j,k) + {b}*(j*k)^{} + max(j, k)/(j + k) + (j + {a}*k) + (k + {a}*j)",
            p as f64 / 4.0
        );
        let ast = parse(&src).unwrap();
        prop_assert!(validate_kernel(ast, 32).is_ok(), "{src}");
    }
}
