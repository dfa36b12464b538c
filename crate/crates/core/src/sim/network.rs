//! Lossy broadcast channel with constant latency.

use std::collections::VecDeque;

use rand::Rng;

#[derive(Debug, Clone)]
pub struct BroadcastBus<M> {
    pub latency: f64,
    pub drop_probability: f64,
    queue: VecDeque<(usize, f64, M)>,
    sent: u64,
    delivered: u64,
}

impl<M: Clone> BroadcastBus<M> {
    pub fn new(latency: f64, drop_probability: f64) -> Self {
        Self { latency, drop_probability, queue: VecDeque::new(), sent: 0, delivered: 0 }
    }

    pub fn send(&mut self, sender: usize, t: f64, message: M) {
        self.queue.push_back((sender, t, message));
        self.sent += 1;
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// (messages sent, message copies delivered)
    pub fn counts(&self) -> (u64, u64) {
        (self.sent, self.delivered)
    }

    /// Hands every message sent at or before `t - latency` to each of the
    /// `receivers` other than its sender, dropping each copy independently.
    /// Inboxes are indexed by receiver and keep send order.
    pub fn deliver<R: Rng + ?Sized>(&mut self, t: f64, receivers: usize, rng: &mut R) -> Vec<Vec<M>> {
        let mut inboxes = vec![Vec::new(); receivers];
        while let Some((sender, sent, _)) = self.queue.front() {
            if *sent + self.latency > t + 1e-9 {
                break;
            }
            let sender = *sender;
            let (_, _, message) = self.queue.pop_front().expect("front exists");
            for (receiver, inbox) in inboxes.iter_mut().enumerate() {
                if receiver == sender {
                    continue;
                }
                let kept = self.drop_probability <= 0.0 || rng.random::<f64>() >= self.drop_probability;
                if kept {
                    inbox.push(message.clone());
                    self.delivered += 1;
                }
            }
        }
        inboxes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_latency_is_same_tick() {
        let mut bus = BroadcastBus::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        bus.send(0, 1.0, "a");
        let inbox = bus.deliver(1.0, 2, &mut rng);
        assert!(inbox[0].is_empty());
        assert_eq!(inbox[1], vec!["a"]);
    }

    #[test]
    fn latency_holds_messages_in_order() {
        let mut bus = BroadcastBus::new(0.1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        bus.send(0, 1.0, 1);
        bus.send(0, 1.02, 2);
        assert!(bus.deliver(1.05, 2, &mut rng)[1].is_empty());
        assert_eq!(bus.deliver(1.12, 2, &mut rng)[1], vec![1, 2]);
        assert_eq!(bus.pending(), 0);
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let mut bus = BroadcastBus::new(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..100 {
            bus.send(0, 0.0, i);
        }
        assert!(bus.deliver(0.0, 3, &mut rng).iter().all(Vec::is_empty));
    }

    #[test]
    fn drop_rate_is_binomial() {
        let mut bus = BroadcastBus::new(0.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for i in 0..1000 {
            bus.send(0, 0.0, i);
        }
        let got = bus.deliver(0.0, 2, &mut rng)[1].len() as f64;
        let (mean, sd) = (700.0, (1000.0f64 * 0.3 * 0.7).sqrt());
        assert!((got - mean).abs() <= 3.0 * sd, "{got}");
    }
}
