"""Log anomaly detection with a reinforcement-learned adaptive top-k filter.

The toolkit covers the classic forecasting-style detection pipeline
(parse raw logs -> partition into event sequences -> predict the next
event -> flag windows whose actual event falls outside the top-k
predictions) and replaces the fixed k with a per-window value chosen by
a small PPO-trained policy network.
"""

__version__ = "0.1.0"
