use proptest::prelude::*;
use regex::Regex;
use synthpipe_core::prompt::{expand_full, sample, AxisName, ParameterAxis, PromptMatrix, PromptTemplate};

fn axes(sizes: &[usize; 4]) -> Vec<ParameterAxis> {
    AxisName::ALL
        .iter()
        .zip(sizes)
        .map(|(name, &n)| {
            let values: Vec<String> = (0..n)
                .map(|i| match name {
                    AxisName::AspectRatio => format!("{}:{}", i + 1, i + 2),
                    _ => format!("{} option {}", name, i),
                })
                .collect();
            ParameterAxis::new(*name, values).unwrap()
        })
        .collect()
}

fn grammar() -> Regex {
    Regex::new(r"^/imagine prompt: three construction workers at work .+, .+, .+ --ar \d+:\d+$").unwrap()
}

proptest! {
    #[test]
    fn cardinality_is_product(sizes in prop::array::uniform4(1usize..6)) {
        let specs = expand_full(&PromptTemplate::default(), &axes(&sizes)).unwrap();
        prop_assert_eq!(specs.len(), sizes.iter().product::<usize>());
        let distinct: std::collections::HashSet<_> = specs.iter().map(|s| &s.rendered).collect();
        prop_assert_eq!(distinct.len(), specs.len());
        prop_assert!(specs.iter().enumerate().all(|(i, s)| s.id == i as u64));
    }

    #[test]
    fn sample_is_distinct_subset(sizes in prop::array::uniform4(1usize..5), seed: u64, frac in 0.0f64..1.0) {
        let a = axes(&sizes);
        let total: usize = sizes.iter().product();
        let n = ((total as f64 * frac) as usize).max(1);
        let t = PromptTemplate::default();
        let s = sample(&t, &a, n, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        let combos: std::collections::HashSet<_> = s.iter().map(|p| p.combination).collect();
        prop_assert_eq!(combos.len(), n);
        prop_assert_eq!(s.clone(), sample(&t, &a, n, seed).unwrap());
        let re = grammar();
        prop_assert!(s.iter().all(|p| re.is_match(&p.rendered)));
    }
}

#[test]
fn default_vocabulary_grammar() {
    let specs = PromptMatrix::default_vocabulary().expand_full();
    assert_eq!(specs.len(), 3000);
    let re = grammar();
    for s in &specs {
        assert!(re.is_match(&s.rendered), "{}", s.rendered);
    }
}
