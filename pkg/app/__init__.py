# Agentic Chatbot Application