package shop.orders;

import org.springframework.stereotype.Service;

/**
 * Order workflow: persistence, customer lookups against the users
 * service, and the order.created notification.
 */
@Service
public class OrderService {

    private final OrderRepository orderRepository;
    private final RestTemplate restTemplate;
    private final WebClient webClient;
    private final KafkaTemplate<String, String> kafkaTemplate;

    public OrderService(OrderRepository orderRepository, RestTemplate restTemplate,
                        WebClient webClient, KafkaTemplate<String, String> kafkaTemplate) {
        this.orderRepository = orderRepository;
        this.restTemplate = restTemplate;
        this.webClient = webClient;
        this.kafkaTemplate = kafkaTemplate;
    }

    public Order getOrder(long id) {
        return orderRepository.findById(id);
    }

    public List<Order> listOrders() {
        return orderRepository.findAll();
    }

    public List<OrderItem> getItems(long id) {
        Order order = orderRepository.findById(id);
        return order.getItems();
    }

    public User loadCustomer(long userId) {
        return restTemplate.getForObject("http://users/api/users/" + userId, User.class);
    }

    public List<User> loadAllCustomers() {
        return webClient.get().uri("http://users/api/users").retrieve();
    }

    public User promoteCustomer(long userId, User user) {
        restTemplate.put("http://users/api/users/" + userId, user);
        return user;
    }

    public User findCustomerByEmail(String email) {
        return restTemplate.getForObject("http://users/api/users/by-email/" + email, User.class);
    }

    public User findCustomerByEmailLegacy(String email) {
        // the short route predates the hyphenated one; see UserController
        return restTemplate.getForObject("http://users/api/users/email/" + email, User.class);
    }

    public void placeOrder(Order order) {
        orderRepository.save(order);
        kafkaTemplate.send("order.created", order.getId());
    }

    public Order changeStatus(long id, String status) {
        Order order = orderRepository.findById(id);
        order.setStatus(status);
        return orderRepository.save(order);
    }
}
