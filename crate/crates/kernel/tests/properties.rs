use std::cell::RefCell;
use std::rc::Rc;

use neusim_kernel::{Env, Fifo, Signal, SimTime};
use proptest::prelude::*;

/// A small producer/consumer system with data-dependent delays.
fn build(env: &Env, delays: &[u64], capacity: usize) -> Rc<RefCell<Vec<u64>>> {
    let fifo = Fifo::new(env, capacity);
    let out = Rc::new(RefCell::new(Vec::new()));
    let (f, e, d) = (fifo.clone(), env.clone(), delays.to_vec());
    env.spawn("producer", async move {
        for (i, delay) in d.iter().enumerate() {
            e.timeout(*delay % 5).await;
            f.put(i as u64).await;
        }
        Ok(())
    })
    .unwrap();
    let (f, e, d, o) = (fifo, env.clone(), delays.to_vec(), out.clone());
    env.spawn("consumer", async move {
        for delay in d.iter().rev() {
            let v = f.get().await;
            o.borrow_mut().push(v);
            e.timeout(*delay % 3).await;
        }
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn interleaved_hundred_puts_and_gets_preserve_order() {
    let delays: Vec<u64> = (0..100).map(|i| (i * 7 + 3) % 11).collect();
    let env = Env::new();
    let out = build(&env, &delays, 3);
    env.run().unwrap();
    let expected: Vec<u64> = (0..100).collect();
    assert_eq!(*out.borrow(), expected);
}

#[test]
fn identical_runs_produce_identical_event_logs() {
    let delays: Vec<u64> = (0..50).map(|i| (i * 13) % 7).collect();
    let run = || {
        let env = Env::new();
        env.enable_log();
        build(&env, &delays, 2);
        env.run().unwrap();
        (env.digest(), env.event_log())
    };
    let (d1, l1) = run();
    let (d2, l2) = run();
    assert_eq!(d1, d2);
    assert_eq!(l1, l2);
    assert!(l1.windows(2).all(|w| w[0].time <= w[1].time));
}

#[test]
fn signal_wakes_each_waiter_exactly_once() {
    let env = Env::new();
    let sig = Signal::new(&env);
    let hits = Rc::new(RefCell::new(vec![0u32; 8]));
    for i in 0..8 {
        let (s, h) = (sig.clone(), hits.clone());
        env.spawn(format!("w{i}"), async move {
            s.wait().await;
            h.borrow_mut()[i] += 1;
            Ok(())
        })
        .unwrap();
    }
    let (s, e) = (sig.clone(), env.clone());
    env.spawn("firer", async move {
        e.timeout(2).await;
        s.fire();
        e.timeout(2).await;
        s.fire();
        Ok(())
    })
    .unwrap();
    assert_eq!(env.run().unwrap(), SimTime(4));
    assert!(hits.borrow().iter().all(|&h| h == 1));
}

proptest! {
    #[test]
    fn fifo_conserves_items_and_time_is_monotone(
        delays in proptest::collection::vec(0u64..20, 1..80),
        capacity in 1usize..6,
    ) {
        let env = Env::new();
        env.enable_log();
        let out = build(&env, &delays, capacity);
        env.run().unwrap();
        let expected: Vec<u64> = (0..delays.len() as u64).collect();
        prop_assert_eq!(out.borrow().clone(), expected);
        let log = env.event_log();
        prop_assert!(log.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
